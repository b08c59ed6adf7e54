import os
import shutil
import tempfile

import pandas as pd
import pytest

from edpcea.repositories.output_repository import PROVENANCE_PREFIX, OutputRepository, read_frame, read_provenance
from edpcea.utils.errors import ArtifactError


class TestOutputRepository:
    def setup_method(self, method):
        self.tmp_dir = tempfile.mkdtemp(prefix="edpcea_test_")
        self.repo = OutputRepository(os.path.join(self.tmp_dir, "out"), {"fingerprint": "abc", "config": {"seed": 1}})

    def teardown_method(self, method):
        shutil.rmtree(self.tmp_dir, ignore_errors=True)

    def test_write_puts_provenance_first(self):
        path = self.repo.write("t.csv", pd.DataFrame({"kappa": [0.0, 1.0], "prob": [0.25, 0.75]}))
        with open(path, encoding="utf-8") as f:
            first = f.readline()
        assert first.startswith(PROVENANCE_PREFIX)
        assert read_provenance(path) == {"config": {"seed": 1}, "fingerprint": "abc"}

    def test_read_frame_skips_provenance(self):
        frame = pd.DataFrame({"i": [0, 1], "p": [0.1, 1.0 / 3.0]})
        path = self.repo.write("t.csv", frame)
        loaded = read_frame(path)
        assert list(loaded.columns) == ["i", "p"]
        assert loaded["p"].iloc[1] == pytest.approx(1.0 / 3.0, rel=1e-15)

    def test_plain_csv_has_no_provenance(self):
        path = os.path.join(self.tmp_dir, "plain.csv")
        with open(path, "w", encoding="utf-8") as f:
            f.write("a,b\n1,2\n")
        assert read_provenance(path) == {}
        assert read_frame(path)["b"].tolist() == [2]

    def test_missing_artifact(self):
        with pytest.raises(ArtifactError):
            read_frame(os.path.join(self.tmp_dir, "absent.csv"))

import json
import os
from typing import Dict, Optional

import pandas as pd

from edpcea.utils.errors import ArtifactError, ParseError
from edpcea.utils.logger import get_logger

PROVENANCE_PREFIX = "# edpcea "


class OutputRepository:
    """
    Tidy CSV artifacts under one output directory. Each file starts with a
    '# edpcea {json}' provenance line carrying the effective config and its fingerprint.
    """

    def __init__(self, out_dir: str, provenance: Optional[Dict] = None):
        self.out_dir = str(out_dir)
        self.provenance = provenance or {}
        self.logger = get_logger()

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def write(self, name: str, frame: pd.DataFrame) -> str:
        os.makedirs(self.out_dir, exist_ok=True)
        path = self.path(name)
        header = PROVENANCE_PREFIX + json.dumps(self.provenance, sort_keys=True, separators=(",", ":"))
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(header + "\n")
            frame.to_csv(f, index=False, float_format="%.17g", lineterminator="\n")
        self.logger.info(f"Wrote {name}: {len(frame)} rows")
        return path


def read_provenance(path: str) -> Dict:
    with open(path, "r", encoding="utf-8") as f:
        first = f.readline()
    if not first.startswith(PROVENANCE_PREFIX):
        return {}
    try:
        return json.loads(first[len(PROVENANCE_PREFIX):])
    except json.JSONDecodeError as e:
        raise ParseError(f"bad provenance line: {e.msg}", line=1)


def read_frame(path: str) -> pd.DataFrame:
    """Read a CSV artifact, skipping the provenance line when present."""
    if not os.path.exists(path):
        raise ArtifactError(f"artifact not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        skip = 1 if f.readline().startswith(PROVENANCE_PREFIX) else 0
    try:
        return pd.read_csv(path, skiprows=skip)
    except pd.errors.EmptyDataError:
        raise ParseError(f"{path} holds no table", line=skip + 1)

import os
import shutil
import tempfile

import openpyxl
import pytest

from edpcea.models.subject_model import Dataset, Subject
from edpcea.repositories.dataset_repository import dataset_frame, load_dataset, write_dataset
from edpcea.utils.errors import ParseError, ValidationError


class TestDatasetRepository:
    def setup_method(self, method):
        self.tmp_dir = tempfile.mkdtemp(prefix="edpcea_test_")

    def teardown_method(self, method):
        shutil.rmtree(self.tmp_dir, ignore_errors=True)

    def write(self, name, text):
        path = os.path.join(self.tmp_dir, name)
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
        return path

    def test_load_valid_csv(self):
        path = self.write("d.csv", "y,t,delta,a,l1,l2\n10.5,1.2,1,0,0.3,1\n8,2.5,0,1,-0.1,0\n")
        dataset = load_dataset(path)
        assert dataset.n == 2
        assert dataset.q == 2
        assert dataset.subjects[1] == Subject(8.0, 2.5, 0, 1, [-0.1, 0.0])

    def test_write_then_load_is_exact(self):
        subjects = [Subject(1.0 / 3.0, 0.1 + 0.2, 1, 0, [1e-300, -2.5e17]), Subject(7.0, 1.0, 0, 1, [0.0, 1.0])]
        dataset = Dataset(subjects)
        path = os.path.join(self.tmp_dir, "out", "d.csv")
        write_dataset(dataset, path)
        assert load_dataset(path) == dataset

    def test_round_trip_with_intercept_keeps_raw_columns(self):
        dataset = Dataset([Subject(2.0, 1.0, 1, 1, [0.5])], add_intercept=True)
        assert list(dataset_frame(dataset).columns) == ["y", "t", "delta", "a", "l1"]
        path = os.path.join(self.tmp_dir, "d.csv")
        write_dataset(dataset, path)
        assert load_dataset(path, add_intercept=True) == dataset

    def test_header_contract(self):
        path = self.write("bad.csv", "t,y,delta,a\n1,1,1,0\n")
        with pytest.raises(ParseError) as e:
            load_dataset(path)
        assert e.value.line == 1
        path = self.write("gap.csv", "y,t,delta,a,l2\n1,1,1,0,0\n")
        with pytest.raises(ParseError):
            load_dataset(path)

    def test_unparseable_value_reports_line(self):
        path = self.write("d.csv", "y,t,delta,a\n1,1,1,0\n2,abc,1,1\n")
        with pytest.raises(ParseError) as e:
            load_dataset(path)
        assert e.value.line == 3

    def test_invalid_rows(self):
        path = self.write("d.csv", "y,t,delta,a\n1,1,1,0\n2,-1,1,1\n")
        with pytest.raises(ValidationError) as e:
            load_dataset(path)
        assert e.value.row == 2
        assert e.value.field == "t"
        path = self.write("f.csv", "y,t,delta,a\n1,1,0.5,0\n")
        with pytest.raises(ValidationError):
            load_dataset(path)

    def test_lognormal_rejects_zero_cost(self):
        path = self.write("d.csv", "y,t,delta,a\n0,1,1,0\n")
        load_dataset(path)
        with pytest.raises(ValidationError):
            load_dataset(path, cost_model="lognormal")

    def test_missing_file(self):
        with pytest.raises(ValidationError):
            load_dataset(os.path.join(self.tmp_dir, "absent.csv"))

    def test_workbook_matches_csv(self):
        path = os.path.join(self.tmp_dir, "d.xlsx")
        wb = openpyxl.Workbook()
        ws = wb.active
        ws.append(["y", "t", "delta", "a", "l1"])
        ws.append([10.5, 1.2, 1, 0, 0.3])
        ws.append([8, 2.5, 0, 1, -0.1])
        wb.save(path)
        csv_path = self.write("d.csv", "y,t,delta,a,l1\n10.5,1.2,1,0,0.3\n8,2.5,0,1,-0.1\n")
        assert load_dataset(path) == load_dataset(csv_path)

    def test_blank_line_keeps_physical_line_numbers(self):
        path = self.write("d.csv", "y,t,delta,a\n1.0,2.0,1,0\n\n1.0,x,1,1\n")
        with pytest.raises(ParseError) as e:
            load_dataset(path)
        assert e.value.line == 3
        assert "blank" in str(e.value)

    def test_trailing_blank_lines_are_ignored(self):
        path = self.write("d.csv", "y,t,delta,a\n1.0,2.0,1,0\n2.0,1.0,0,1\n\n\n")
        assert load_dataset(path).n == 2

    def test_bad_value_after_valid_rows_reports_its_line(self):
        path = self.write("d.csv", "y,t,delta,a\n1.0,2.0,1,0\n1.5,1.0,0,0\n1.0,x,1,1\n")
        with pytest.raises(ParseError) as e:
            load_dataset(path)
        assert e.value.line == 4

    def test_invalid_utf8_is_a_parse_error(self):
        path = os.path.join(self.tmp_dir, "d.csv")
        with open(path, "wb") as f:
            f.write(b"y,t,delta,a\n1.0,2.0,1,0\n\xff\xfe,1.0,1,1\n")
        with pytest.raises(ParseError) as e:
            load_dataset(path)
        assert e.value.line == 3

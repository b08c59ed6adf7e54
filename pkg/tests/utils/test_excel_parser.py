import os
import shutil
import tempfile

import openpyxl
import pytest

from edpcea.utils.excel_parser import ExcelParser


class TestExcelParser:
    def setup_method(self, method):
        self.tmp_dir = tempfile.mkdtemp()
        self.path = os.path.join(self.tmp_dir, "subjects.xlsx")
        wb = openpyxl.Workbook()
        ws = wb.active
        ws.append(["y", "t", "delta", "a", "l1"])
        for i in range(8):
            ws.append([10.0 + i, 1.0 + i, i % 2, (i + 1) % 2, 0.5 * i])
        ws.append([None, None, None, None, None])
        wb.save(self.path)

    def teardown_method(self, method):
        shutil.rmtree(self.tmp_dir, ignore_errors=True)

    def test_parse_excel(self):
        parser = ExcelParser(self.path)
        rows = parser.parse()
        # header plus 8 subjects, trailing blank row dropped
        assert len(parser.rows) == 9
        assert rows[0] == ["y", "t", "delta", "a", "l1"]
        assert rows[3][1] == 3.0

    def test_unsupported_suffix(self):
        with pytest.raises(ValueError):
            ExcelParser(os.path.join(self.tmp_dir, "subjects.ods")).parse()

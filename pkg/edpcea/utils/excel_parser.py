from pathlib import Path

import openpyxl
import xlrd


class ExcelParser:
    """Reads the first sheet of a workbook into a list of row lists (header row included)."""

    def __init__(self, file_path):
        self.file_path = file_path
        self.rows = []

    def parse(self):
        suffix = Path(self.file_path).suffix.lower()
        if suffix == ".xlsx":
            self._parse_xlsx()
        elif suffix == ".xls":
            self._parse_xls()
        else:
            raise ValueError(f"unsupported spreadsheet type '{suffix}'")
        # trailing blank rows are common in hand-edited sheets
        while self.rows and all(cell in (None, "") for cell in self.rows[-1]):
            self.rows.pop()
        return self.rows

    def _parse_xlsx(self):
        wb = openpyxl.load_workbook(self.file_path, read_only=True, data_only=True)
        ws = wb.active
        for row in ws.iter_rows(values_only=True):
            self.rows.append(list(row))
        wb.close()

    def _parse_xls(self):
        # openpyxl doesn't support xls, use xlrd
        wb = xlrd.open_workbook(self.file_path)
        ws = wb.sheet_by_index(0)
        for idx in range(ws.nrows):
            self.rows.append(list(ws.row_values(idx)))

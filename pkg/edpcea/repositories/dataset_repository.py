import os
import re
from pathlib import Path
from typing import List

import numpy as np
import pandas as pd

from edpcea.models.subject_model import Dataset, Subject
from edpcea.utils.errors import ParseError, ValidationError
from edpcea.utils.excel_parser import ExcelParser
from edpcea.utils.logger import get_logger

REQUIRED_COLUMNS = ["y", "t", "delta", "a"]
INTEGER_COLUMNS = ("delta", "a")
_CONFOUNDER = re.compile(r"^l(\d+)$")

logger = get_logger()


def _check_header(columns: List[str]) -> List[str]:
    columns = [str(c).strip() for c in columns]
    if columns[:4] != REQUIRED_COLUMNS:
        raise ParseError(f"header must start with y,t,delta,a, got {','.join(columns[:4])}", line=1)
    confounders = columns[4:]
    for idx, name in enumerate(confounders, start=1):
        match = _CONFOUNDER.match(name)
        if not match or int(match.group(1)) != idx:
            raise ParseError(f"expected confounder column 'l{idx}', got '{name}'", line=1)
    return columns


def _frame_from_rows(rows) -> pd.DataFrame:
    if not rows:
        raise ParseError("file is empty", line=1)
    columns = _check_header(rows[0])
    body = []
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != len(columns):
            raise ParseError(f"expected {len(columns)} fields, saw {len(row)}", line=line)
        body.append(["" if cell is None else str(cell) for cell in row])
    return pd.DataFrame(body, columns=columns, dtype=str)


def _undecodable_line(path):
    """1-based line holding the first byte sequence that is not UTF-8."""
    with open(path, "rb") as f:
        for line, raw in enumerate(f, start=1):
            try:
                raw.decode("utf-8")
            except UnicodeDecodeError:
                return line
    return None


def _read_csv_frame(path) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True,
                            skip_blank_lines=False, encoding="utf-8", sep=",", decimal=".")
    except pd.errors.EmptyDataError:
        raise ParseError("file is empty", line=1)
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        raise ParseError(str(e), line=int(match.group(1)) if match else None)
    except UnicodeDecodeError as e:
        raise ParseError(f"not valid UTF-8 ({e.reason})", line=_undecodable_line(path))
    _check_header(list(frame.columns))
    # frame row r sits on physical line r + 2 once blank lines are kept
    blank = (frame.fillna("").astype(str).apply(lambda col: col.str.strip()) == "").all(axis=1).to_numpy()
    trailing = len(blank) - int(np.argmin(blank[::-1])) if not blank.all() else 0
    frame = frame.iloc[:trailing]
    if blank[:trailing].any():
        raise ParseError("blank row", line=int(np.argmax(blank[:trailing])) + 2)
    return frame


def _to_subjects(frame: pd.DataFrame) -> List[Subject]:
    numeric = {}
    for column in frame.columns:
        values = frame[column].fillna("").astype(str).str.strip().tolist()
        # python float() is correctly rounded, which the round-trip contract relies on
        converted = np.empty(len(values), dtype=float)
        for row, raw in enumerate(values):
            if raw == "":
                raise ParseError(f"column '{column}': missing value", line=row + 2)
            try:
                converted[row] = float(raw)
            except ValueError:
                raise ParseError(f"column '{column}': cannot parse '{raw}' as a number", line=row + 2)
        if column in INTEGER_COLUMNS:
            fractional = ~np.isfinite(converted) | (converted != np.round(converted))
            if fractional.any():
                row = int(np.argmax(fractional))
                raise ValidationError(f"must be an integer, got {converted[row]}", row=row + 1, field=column)
        numeric[column] = converted

    l_columns = [c for c in frame.columns if c not in REQUIRED_COLUMNS]
    subjects = []
    for i in range(len(frame)):
        subjects.append(Subject(
            y=numeric["y"][i],
            t=numeric["t"][i],
            delta=int(numeric["delta"][i]),
            a=int(numeric["a"][i]),
            l=[numeric[c][i] for c in l_columns],
        ))
    return subjects


def load_dataset(path, cost_model: str = "gaussian", add_intercept: bool = False) -> Dataset:
    """
    Load and validate a cost-survival dataset.

    Args:
        path: CSV (header y,t,delta,a,l1..lq) or an .xlsx/.xls workbook with the same first sheet layout.
        cost_model: 'gaussian' or 'lognormal'; the latter requires y > 0.
        add_intercept: Prepend a constant-1 confounder.

    Returns:
        Dataset with subjects in file row order.
    """
    if not os.path.exists(path):
        raise ValidationError(f"dataset file not found: {path}")
    suffix = Path(path).suffix.lower()
    if suffix in (".xlsx", ".xls"):
        parser = ExcelParser(path)
        frame = _frame_from_rows(parser.parse())
    else:
        frame = _read_csv_frame(path)
    subjects = _to_subjects(frame)
    dataset = Dataset(subjects, cost_model=cost_model, add_intercept=add_intercept)
    logger.info(f"Loaded dataset {path}: n={dataset.n}, q={dataset.q}, cost_model={cost_model}")
    return dataset


def dataset_frame(dataset: Dataset) -> pd.DataFrame:
    subjects = dataset.raw_subjects()
    q = len(subjects[0].l) if subjects else 0
    frame = pd.DataFrame({
        "y": [s.y for s in subjects],
        "t": [s.t for s in subjects],
        "delta": [s.delta for s in subjects],
        "a": [s.a for s in subjects],
    })
    for idx in range(q):
        frame[f"l{idx + 1}"] = [s.l[idx] for s in subjects]
    return frame


def write_dataset(dataset: Dataset, path):
    """Write a dataset so that load_dataset reproduces every field exactly."""
    dir_path = os.path.dirname(str(path))
    if dir_path:
        os.makedirs(dir_path, exist_ok=True)
    # 17 significant digits round-trip any double
    dataset_frame(dataset).to_csv(path, index=False, float_format="%.17g", encoding="utf-8",
                                  lineterminator="\n")
    logger.info(f"Wrote dataset {path}: n={dataset.n}")

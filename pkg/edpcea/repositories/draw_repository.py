import json
import os

from edpcea.models.draw_model import DrawRecord, DrawStore
from edpcea.utils.errors import ArtifactError, ParseError
from edpcea.utils.logger import get_logger


class DrawRepository:
    """
    JSON-lines persistence of a DrawStore: a header record first, then one
    record per retained draw in (chain, iteration) order.
    """

    def __init__(self, path: str):
        self.path = str(path)
        self.logger = get_logger()

    def save(self, store: DrawStore):
        dir_path = os.path.dirname(self.path)
        if dir_path:
            os.makedirs(dir_path, exist_ok=True)
        header = dict(store.meta)
        header["type"] = "header"
        with open(self.path, "w", encoding="utf-8", newline="\n") as f:
            f.write(json.dumps(header, allow_nan=False) + "\n")
            for record in store.records:
                f.write(json.dumps(record.to_dict(), allow_nan=False) + "\n")
        self.logger.info(f"Wrote {len(store)} draws to {self.path}")

    def load(self) -> DrawStore:
        if not os.path.exists(self.path):
            raise ArtifactError(f"draw file not found: {self.path}")
        header = None
        records = []
        with open(self.path, "r", encoding="utf-8") as f:
            for line_no, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    data = json.loads(line)
                except json.JSONDecodeError as e:
                    raise ParseError(f"invalid JSON: {e.msg}", line=line_no)
                kind = data.get("type")
                if line_no == 1:
                    if kind != "header":
                        raise ParseError("first record must be the run header", line=1)
                    header = data
                elif kind == "draw":
                    try:
                        records.append(DrawRecord.from_dict(data))
                    except (KeyError, TypeError, ValueError) as e:
                        raise ParseError(f"malformed draw record: {e}", line=line_no)
                else:
                    raise ParseError(f"unexpected record type '{kind}'", line=line_no)
        if header is None:
            raise ParseError("draw file is empty", line=1)
        self.logger.info(f"Loaded {len(records)} draws from {self.path}")
        return DrawStore(header, records)

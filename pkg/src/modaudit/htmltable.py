"""Minimal HTML table reader built on html.parser.

Supports flat tables of tr/td/th cells with colspan (cell text repeated per
spanned column). Nested tables are not modeled; their text folds into the
enclosing cell.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from html.parser import HTMLParser


class TableNotFound(ValueError):
    pass


@dataclass
class HtmlTable:
    ident: str | None = None
    caption: str = ""
    rows: list[list[str]] = field(default_factory=list)


_WS = re.compile(r"\s+")


def _clean(text: str) -> str:
    return _WS.sub(" ", text).strip()


class _TableParser(HTMLParser):
    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.tables: list[HtmlTable] = []
        self._depth = 0
        self._table: HtmlTable | None = None
        self._row: list[str] | None = None
        self._cell: list[str] | None = None
        self._cell_span = 1
        self._in_caption = False
        self._caption: list[str] = []

    def handle_starttag(self, tag, attrs):
        if tag == "table":
            self._depth += 1
            if self._depth == 1:
                self._table = HtmlTable(ident=dict(attrs).get("id"))
            return
        if self._depth != 1 or self._table is None:
            return
        if tag == "caption":
            self._in_caption = True
        elif tag == "tr":
            self._flush_cell()
            self._row = []
        elif tag in ("td", "th"):
            self._flush_cell()
            self._cell = []
            try:
                self._cell_span = max(1, int(dict(attrs).get("colspan", 1)))
            except ValueError:
                self._cell_span = 1

    def handle_endtag(self, tag):
        if tag == "table":
            if self._depth == 1 and self._table is not None:
                self._flush_cell()
                self._flush_row()
                self.tables.append(self._table)
                self._table = None
            self._depth = max(0, self._depth - 1)
            return
        if self._depth != 1 or self._table is None:
            return
        if tag == "caption":
            self._in_caption = False
            self._table.caption = _clean("".join(self._caption))
            self._caption = []
        elif tag == "tr":
            self._flush_cell()
            self._flush_row()
        elif tag in ("td", "th"):
            self._flush_cell()

    def handle_data(self, data):
        if self._in_caption:
            self._caption.append(data)
        elif self._cell is not None:
            self._cell.append(data)

    def _flush_cell(self) -> None:
        if self._cell is not None and self._row is not None:
            text = _clean("".join(self._cell))
            self._row.extend([text] * self._cell_span)
        self._cell = None
        self._cell_span = 1

    def _flush_row(self) -> None:
        if self._row is not None and self._table is not None:
            self._table.rows.append(self._row)
        self._row = None


def parse_tables(document: str) -> list[HtmlTable]:
    parser = _TableParser()
    parser.feed(document)
    parser.close()
    return parser.tables


def find_table(tables: list[HtmlTable], selector: str | int) -> HtmlTable:
    """Locate a table by 0-based index, '#id', or caption substring."""
    if isinstance(selector, int) or (isinstance(selector, str) and selector.isdigit()):
        index = int(selector)
        if 0 <= index < len(tables):
            return tables[index]
        raise TableNotFound(f"no table at index {index}; document has {len(tables)}")
    if selector.startswith("#"):
        ident = selector[1:]
        for table in tables:
            if table.ident == ident:
                return table
        raise TableNotFound(f"no table with id {ident!r}")
    needle = selector.casefold()
    for table in tables:
        if needle in table.caption.casefold():
            return table
    raise TableNotFound(f"no table with caption matching {selector!r}")


def resolve_column(header: list[str], column: str | int, role: str) -> int:
    """Map a column binding (header name or 0-based index) to its position."""
    if isinstance(column, int) or (isinstance(column, str) and column.isdigit()):
        index = int(column)
        if 0 <= index < len(header):
            return index
        raise TableNotFound(f"{role} column index {index} out of range for header {header}")
    folded = [h.casefold() for h in header]
    key = column.casefold().strip()
    if key in folded:
        return folded.index(key)
    raise TableNotFound(f"{role} column {column!r} missing from header row {header}")

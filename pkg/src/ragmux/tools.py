"""Tools the pipeline can invoke: a calculator and a table cell lookup."""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass

from .chunking import Chunk, Modality
from .text import expand_terms, tokenize


class ToolError(Exception):
    pass


class ToolFailure(ToolError):
    """A tool was invoked with input it cannot process (bad expression)."""


class NotATable(ToolError):
    """table_lookup was handed a chunk that is not table modality."""


@dataclass
class ToolOutput:
    tool: str
    value: str
    detail: str = ""


_ALLOWED_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div)
_EXPR_RE = re.compile(r"[0-9][0-9.\s+\-*/×÷()]*[0-9)]")


def _eval_node(node: ast.AST) -> float:
    if isinstance(node, ast.Expression):
        return _eval_node(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return float(node.value)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.UAdd, ast.USub)):
        value = _eval_node(node.operand)
        return value if isinstance(node.op, ast.UAdd) else -value
    if isinstance(node, ast.BinOp) and isinstance(node.op, _ALLOWED_BINOPS):
        left = _eval_node(node.left)
        right = _eval_node(node.right)
        if isinstance(node.op, ast.Add):
            return left + right
        if isinstance(node.op, ast.Sub):
            return left - right
        if isinstance(node.op, ast.Mult):
            return left * right
        if right == 0:
            raise ToolFailure("division by zero")
        return left / right
    raise ToolFailure(f"unsupported expression element {type(node).__name__}")


def calculate(expression: str) -> str:
    """Evaluate + - * / (and x/÷ synonyms) with parentheses and precedence.

    Returns the result as a string, rendered as an integer when exact.
    Raises ToolFailure for anything that is not plain arithmetic.
    """
    cleaned = expression.replace("×", "*").replace("÷", "/").strip()
    if not cleaned:
        raise ToolFailure("empty expression")
    try:
        parsed = ast.parse(cleaned, mode="eval")
    except SyntaxError as exc:
        raise ToolFailure(f"bad expression {expression!r}: {exc.msg}") from None
    result = _eval_node(parsed)
    if result == int(result):
        return str(int(result))
    return repr(result)


def extract_expression(query: str) -> str | None:
    """Pull the first arithmetic expression out of free text, if any.

    Requires at least one operator between two numbers; a bare hyphen
    inside a word ("120-pound") is not treated as a minus sign.
    """
    for m in _EXPR_RE.finditer(query):
        candidate = m.group(0).strip()
        if re.search(r"\d\s*[+*/×÷]\s*\d|\d\s+-\s+\d|\)\s*[+\-*/]|[+\-*/]\s*\(", candidate):
            try:
                calculate(candidate)
            except ToolFailure:
                continue
            return candidate
    return None


def _cell_terms(cell: str) -> set[str]:
    return expand_terms(tokenize(cell))


def parse_grid(text: str) -> list[list[str]]:
    """Rows of cells from serialized table text (newline rows, ' | ' cells)."""
    return [[cell.strip() for cell in line.split(" | ")] for line in text.split("\n") if line.strip()]


def table_lookup(
    table_chunk: Chunk, row_terms: list[str] | tuple[str, ...], col_terms: list[str] | tuple[str, ...]
) -> str | None:
    """Pick the grid cell at the best-matching row header and column header.

    The first grid row is the column header row; each row's first cell is
    its row header. Matching counts shared normalized terms; ties take the
    first row/column. Returns None when either best overlap is zero.
    """
    if table_chunk.modality is not Modality.TABLE:
        raise NotATable(f"chunk {table_chunk.chunk_id} has modality {table_chunk.modality.value}")
    grid = parse_grid(table_chunk.text)
    if len(grid) < 2 or len(grid[0]) < 2:
        return None
    wanted_rows = expand_terms(row_terms)
    wanted_cols = expand_terms(col_terms)

    best_row, best_row_overlap = -1, 0
    for i, row in enumerate(grid[1:], start=1):
        overlap = len(_cell_terms(row[0]) & wanted_rows)
        if overlap > best_row_overlap:
            best_row, best_row_overlap = i, overlap
    best_col, best_col_overlap = -1, 0
    for j, header in enumerate(grid[0][1:], start=1):
        overlap = len(_cell_terms(header) & wanted_cols)
        if overlap > best_col_overlap:
            best_col, best_col_overlap = j, overlap

    if best_row_overlap == 0 or best_col_overlap == 0:
        return None
    row = grid[best_row]
    if best_col >= len(row):
        return None
    return row[best_col]

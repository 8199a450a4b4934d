"""Write a :class:`MilpModel` in the algebraic LP file format (CPLEX/HiGHS dialect)."""
from __future__ import annotations

import re
from pathlib import Path

from .model import BINARY, MilpModel

_BAD = re.compile(r"[^A-Za-z0-9_.()]")


def lp_name(name: str) -> str:
    s = name.replace("[", "(").replace("]", ")").replace(",", ".")
    s = _BAD.sub("_", s)
    if not s or s[0].isdigit() or s[0] in ".eE":
        s = "v_" + s
    return s


def _num(a: float) -> str:
    return format(a, ".17g")


def _expr(coeffs) -> str:
    parts = []
    for name, a in coeffs.items():
        sign = "-" if a < 0 else "+"
        parts.append(f"{sign} {_num(abs(a))} {lp_name(name)}")
    if not parts:
        return "0"
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def _wrap(text: str, width: int = 240) -> str:
    out, line = [], ""
    for tok in text.split(" "):
        if len(line) + len(tok) + 1 > width:
            out.append(line)
            line = " "
        line += (" " if line.strip() else "") + tok
    out.append(line)
    return "\n ".join(s.strip() for s in out if s.strip())


def dumps_lp(model: MilpModel, title: str = "") -> str:
    obj = model.objective
    lines = []
    if title:
        lines.append(f"\\ {title}")
    lines.append("Maximize" if obj.sense == "max" else "Minimize")
    expr = _expr(obj.coeffs)
    if obj.constant:
        expr += f" {'-' if obj.constant < 0 else '+'} {_num(abs(obj.constant))}"
    lines.append(" obj: " + _wrap(expr))
    lines.append("Subject To")
    for k, con in enumerate(model.constraints):
        label = lp_name(con.name) if con.name else f"c{k}"
        lines.append(f" c{k}_{label}: {_wrap(_expr(con.coeffs))} {con.sense} {_num(con.rhs)}")
    lines.append("Bounds")
    for v in model.variables:
        if v.kind == BINARY:
            continue
        lines.append(f" {_num(v.lower)} <= {lp_name(v.name)} <= {_num(v.upper)}")
    bins = [lp_name(v.name) for v in model.variables if v.kind == BINARY]
    if bins:
        lines.append("Binaries")
        for k in range(0, len(bins), 8):
            lines.append(" " + " ".join(bins[k : k + 8]))
    lines.append("End")
    return "\n".join(lines) + "\n"


def write_lp(model: MilpModel, path, title: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_lp(model, title), encoding="utf-8")
    return path

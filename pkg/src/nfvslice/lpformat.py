"""Plain-text LP interchange format for ModelIR.

Rows and columns keep their bracket names, so a third-party solver's output
can be mapped straight back onto VarKeys. Every token is whitespace-separated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .formulation import ModelIR

_SECTIONS = ("minimize", "subject to", "bounds", "binaries", "end")


def _num(v: float) -> str:
    return repr(float(v))


def _terms(pairs) -> str:
    out = []
    for name, coef in pairs:
        out.append(f"{'-' if coef < 0 else '+'} {_num(abs(coef))} {name}")
    return " ".join(out) if out else "0"


def write_lp(model: ModelIR) -> str:
    names = [c.key.name for c in model.columns]
    lines = [f"\\ variant={model.variant} path_budget={model.path_budget} constant={_num(model.constant)}",
             "Minimize"]
    obj = sorted((j, v) for j, v in model.objective.items() if v != 0)
    lines.append(" obj: " + _terms((names[j], v) for j, v in obj))
    lines.append("Subject To")
    seen: dict[str, int] = {}
    for r in model.rows:
        lhs = _terms((names[j], v) for j, v in zip(r.cols, r.vals))
        # the three rows of one linearized product share a bracket name
        n = seen[r.name] = seen.get(r.name, 0) + 1
        label = r.name if n == 1 else f"{r.name}#{n}"
        lines.append(f" {label}: {lhs} {r.rel} {_num(r.rhs)}")
    lines.append("Bounds")
    for name, c in zip(names, model.columns):
        if c.binary:
            continue
        ub = "+inf" if c.ub is None or math.isinf(c.ub) else _num(c.ub)
        lines.append(f" {_num(c.lb)} <= {name} <= {ub}")
    lines.append("Binaries")
    lines.extend(f" {name}" for name, c in zip(names, model.columns) if c.binary)
    lines.append("End")
    return "\n".join(lines) + "\n"


@dataclass
class LpText:
    objective: dict[str, float] = field(default_factory=dict)
    constant: float = 0.0
    rows: dict[str, tuple[dict[str, float], str, float]] = field(default_factory=dict)
    bounds: dict[str, tuple[float, float]] = field(default_factory=dict)
    binaries: list[str] = field(default_factory=list)

    @property
    def variables(self) -> list[str]:
        seen = dict.fromkeys(self.objective)
        for terms, _, _ in self.rows.values():
            seen.update(dict.fromkeys(terms))
        seen.update(dict.fromkeys(self.bounds))
        seen.update(dict.fromkeys(self.binaries))
        return list(seen)


def _parse_terms(tokens: list[str]) -> dict[str, float]:
    terms: dict[str, float] = {}
    if tokens == ["0"]:
        return terms
    if len(tokens) % 3:
        raise ValueError(f"malformed expression: {' '.join(tokens)}")
    for sign, coef, name in zip(tokens[::3], tokens[1::3], tokens[2::3]):
        if sign not in "+-":
            raise ValueError(f"expected sign, got {sign!r}")
        terms[name] = terms.get(name, 0.0) + (-1 if sign == "-" else 1) * float(coef)
    return terms


def read_lp(text: str) -> LpText:
    out = LpText()
    section = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("\\"):
            for tok in line[1:].split():
                if tok.startswith("constant="):
                    out.constant = float(tok.split("=", 1)[1])
            continue
        if line.lower() in _SECTIONS:
            section = line.lower()
            continue
        tokens = line.split()
        if section == "minimize":
            out.objective = _parse_terms(tokens[1:])
        elif section == "subject to":
            name = tokens[0].rstrip(":")
            rel, rhs = tokens[-2], float(tokens[-1])
            out.rows[name] = (_parse_terms(tokens[1:-2]), rel, rhs)
        elif section == "bounds":
            lo, _, name, _, hi = tokens
            out.bounds[name] = (float(lo), float(hi))
        elif section == "binaries":
            out.binaries.extend(tokens)
        else:
            raise ValueError(f"content outside any section: {line!r}")
    if section != "end":
        raise ValueError("missing End")
    return out

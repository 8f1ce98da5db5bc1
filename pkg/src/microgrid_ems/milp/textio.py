"""Plain-text model export/import.

Grammar (one record per line, fields separated by single spaces)::

    MILPTEXT 1
    NAME <name>
    OBJCONST <float>
    VARS <n>
    V <index> <name> <lower> <upper> <C|B>        (n lines)
    OBJ <k>
    O <index> <coef>                              (k lines, ascending index)
    ROWS <m>
    R <name> <<=|>=|==> <rhs> <nnz> [<index>:<coef> ...]   (m lines)
    END

Floats are written with ``repr`` so a round trip is exact. Names may not
contain whitespace.
"""

from __future__ import annotations

from .model import MilpModel, ModelError, Row, Variable

HEADER = "MILPTEXT 1"


def _check_name(name: str) -> str:
    if not name or any(ch.isspace() for ch in name):
        raise ModelError(f"name {name!r} is empty or contains whitespace")
    return name


def _num(x) -> str:
    # repr of a plain float is the shortest exact form; numpy scalars are coerced first
    return repr(float(x))


def export_model_text(model: MilpModel) -> str:
    out = [HEADER, f"NAME {_check_name(model.name)}", f"OBJCONST {_num(model.obj_constant)}",
           f"VARS {model.num_vars}"]
    for v in model.variables:
        kind = "B" if v.is_binary else "C"
        out.append(f"V {v.index} {_check_name(v.name)} {_num(v.lower)} {_num(v.upper)} {kind}")
    obj = sorted(model.objective.items())
    out.append(f"OBJ {len(obj)}")
    out.extend(f"O {j} {_num(a)}" for j, a in obj)
    out.append(f"ROWS {model.num_rows}")
    for r in model.rows:
        terms = " ".join(f"{j}:{_num(a)}" for j, a in sorted(r.coeffs.items()))
        line = f"R {_check_name(r.name)} {r.sense} {_num(r.rhs)} {len(r.coeffs)}"
        out.append(f"{line} {terms}" if terms else line)
    out.append("END")
    return "\n".join(out) + "\n"


def import_model_text(text: str) -> MilpModel:
    lines = text.splitlines()
    pos = 0

    def take(prefix: str) -> list[str]:
        nonlocal pos
        if pos >= len(lines):
            raise ModelError(f"unexpected end of input, expected {prefix}")
        parts = lines[pos].split(" ")
        if parts[0] != prefix:
            raise ModelError(f"line {pos + 1}: expected {prefix}, got {parts[0]!r}")
        pos += 1
        return parts[1:]

    if not lines or lines[0] != HEADER:
        raise ModelError("missing MILPTEXT header")
    pos = 1
    model = MilpModel(name=take("NAME")[0])
    model.obj_constant = float(take("OBJCONST")[0])
    for k in range(int(take("VARS")[0])):
        idx, name, lo, hi, kind = take("V")
        if int(idx) != k:
            raise ModelError(f"variable index {idx} out of order")
        model.variables.append(Variable(k, name, float(lo), float(hi), kind == "B"))
    for _ in range(int(take("OBJ")[0])):
        j, a = take("O")
        model.objective[int(j)] = float(a)
    for _ in range(int(take("ROWS")[0])):
        parts = take("R")
        name, sense, rhs, nnz = parts[:4]
        coeffs = {}
        for term in parts[4:4 + int(nnz)]:
            j, a = term.split(":")
            coeffs[int(j)] = float(a)
        model.rows.append(Row(name, coeffs, sense, float(rhs)))
    take("END")
    return model

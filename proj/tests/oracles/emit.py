"""Writes oracle values as C++ constant definitions (*.inc)."""

import pathlib

HERE = pathlib.Path(__file__).resolve().parent


def fmt(x):
    if isinstance(x, (int,)) and not isinstance(x, bool):
        return str(x)
    return repr(float(x))


def write_inc(filename, header, scalars=None, arrays=None):
    lines = [f"// Generated by tests/oracles/{header}. Do not edit.", ""]
    for name, value in (scalars or {}).items():
        lines.append(f"inline constexpr double {name} = {fmt(value)};")
    for name, values in (arrays or {}).items():
        body = ",\n    ".join(", ".join(fmt(v) for v in values[i:i + 4]) for i in range(0, len(values), 4))
        lines.append(f"inline constexpr double {name}[] = {{\n    {body}}};")
    (HERE / filename).write_text("\n".join(lines) + "\n")

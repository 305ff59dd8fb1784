"""The bundled example programs and their recorded expectations.

Each ``.dl2`` file may carry pragma comments:

``-- expect NAME : TYPE``        top-level definition (or ``main``) has this type
``-- expect-error RULE``         checking fails, naming RULE
``-- expect-outcome OUTCOME``    how a run ends (FinalValue, OOBStuck, ...)
``-- expect-fuzz clean|entangled``
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from typedis import ast as A
from typedis.surface import SourceProgram, elaborate_program, parse_program, parse_type

_PRAGMA = re.compile(r"^--\s*(expect-error|expect-outcome|expect-fuzz|expect)\s+(.*?)\s*$")


@dataclass
class CorpusEntry:
    name: str
    path: Path
    text: str
    types: dict[str, str] = field(default_factory=dict)
    error: Optional[str] = None
    outcome: Optional[str] = None
    fuzz: Optional[str] = None

    @property
    def positive(self) -> bool:
        return self.error is None

    def program(self) -> SourceProgram:
        return parse_program(self.text, str(self.path))

    def expr(self) -> A.Expr:
        return elaborate_program(self.program())

    def expected_types(self) -> dict:
        aliases = self.program().aliases
        return {k: parse_type(v, f"{self.path}:expect", aliases) for k, v in self.types.items()}


def parse_pragmas(text: str, path: Path, name: str) -> CorpusEntry:
    e = CorpusEntry(name, path, text)
    for line in text.splitlines():
        m = _PRAGMA.match(line.strip())
        if not m:
            continue
        key, rest = m.groups()
        if key == "expect":
            nm, _, ty = rest.partition(":")
            e.types[nm.strip()] = ty.strip()
        elif key == "expect-error":
            e.error = rest
        elif key == "expect-outcome":
            e.outcome = rest
        else:
            e.fuzz = rest
    return e


def corpus_dir() -> Path:
    return Path(str(resources.files("typedis") / "corpus"))


def load_file(path: str | Path) -> CorpusEntry:
    path = Path(path)
    return parse_pragmas(path.read_text(encoding="utf-8"), path, path.stem)


def entries() -> list[CorpusEntry]:
    return [load_file(p) for p in sorted(corpus_dir().glob("*.dl2"))]


def entry(name: str) -> CorpusEntry:
    return load_file(corpus_dir() / f"{name}.dl2")


POSITIVE = ("closures", "build", "selectmap", "parfor", "par2", "dedup", "disentangled", "oob")
NEGATIVE = ("entangled", "neg_child_store", "neg_deep_array", "neg_tabs")


# ---------------------------------------------------------------------------
# Size-parameterised variants
# ---------------------------------------------------------------------------


def with_main(name: str, main: str) -> str:
    """The text of corpus entry ``name`` with its ``main`` replaced."""
    text = entry(name).text
    head = re.split(r"^main\b", text, maxsplit=1, flags=re.MULTILINE)[0]
    return f"{head}main\n{main}\n"


def build_source(n: int, x: int = 0) -> str:
    return with_main("build", f"  build [d0] ({n}, {x})")


def selectmap_source(n: int, pred: str = "false", f: str = "x + 1", compare: bool = True) -> str:
    body = (f"  let t = build [d0] ({n}, 0) in\n"
            f"  let t2 = selectmap [d0 d0 d0 d0] (\n"
            f"    fun p [e] (x: int) @e : bool -> {pred},\n"
            f"    fun g [e] (x: int) @e : int -> {f}, t) in\n")
    body += "  t2 == t" if compare else "  t2"
    return with_main("selectmap", body)


def parfor_source(n: int) -> str:
    return with_main("parfor", (
        f"  let out = alloc({max(n, 1)}, 0) in\n"
        f"  let _ = parfor [d0 d0] (0, {n}, fun square [e | d0 < e] (i: int) @e : unit ->"
        f" out.[i] <- i * i) in\n  out"))


def dedup_source(values: list[int]) -> str:
    n = len(values)
    lines = [f"  let input = alloc({max(n, 1)}, 0) in"]
    lines += [f"  let _ = input.[{i}] <- {v} in" for i, v in enumerate(values)]
    lines.append("  dedup {int} [d0 d0 d0] (sub[[x | d0 < x](int) -> x int @ d0] hash, -1, input)")
    return with_main("dedup", "\n".join(lines))


def program(text: str, file: str = "<corpus>") -> A.Expr:
    return elaborate_program(parse_program(text, file))

"""Type checking and instrumented execution for a disentangled parallel language."""

from typedis.checker import TypeCheckError, check_expr, check_program, decl_types
from typedis.explorer import Replay, Schedule, Seeded, explore, fuzz, run, simulate_modes
from typedis.surface import elaborate_program, parse_expr, parse_program, parse_type

__version__ = "0.1.0"

__all__ = ["TypeCheckError", "check_expr", "check_program", "decl_types", "Replay", "Schedule",
           "Seeded", "explore", "fuzz", "run", "simulate_modes", "elaborate_program",
           "parse_expr", "parse_program", "parse_type"]

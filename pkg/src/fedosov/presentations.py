"""Shipped example presentations, addressable by name."""
from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import List

from .liepair import Presentation, PresentationError, load_presentation, presentation_from_dict

_PACKAGE_DATA = "fedosov.data"


def shipped_names() -> List[str]:
    return sorted(p.name[:-5] for p in resources.files(_PACKAGE_DATA).iterdir() if p.name.endswith(".json"))


def shipped(name: str) -> Presentation:
    """Load one of the bundled presentations (see :func:`shipped_names`)."""
    res = resources.files(_PACKAGE_DATA) / f"{name}.json"
    if not res.is_file():
        raise PresentationError(f"no shipped presentation called {name!r}; try one of {', '.join(shipped_names())}")
    return presentation_from_dict(json.loads(res.read_text()))


def resolve(ref) -> Presentation:
    """A path to a JSON file, or the name of a shipped presentation."""
    path = Path(ref)
    if path.suffix == ".json" or path.exists():
        if not path.exists():
            raise PresentationError(f"{ref}: no such file")
        return load_presentation(path)
    return shipped(str(ref))


# Groupings used by the test-suite and `verify-all`.
POINT_EXAMPLES = ("abelian", "solvable", "so3_e3", "sl2_borel", "abelian_r2", "abelian_r3")
CHART_EXAMPLES = ("line_const", "line_x", "plane_poly", "foliation")
TANGENT_EXAMPLES = ("line_const", "line_x", "plane_poly")

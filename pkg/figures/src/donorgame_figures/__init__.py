"""Figure rendering for donorgame analysis tables."""

from .render import render, render_default_figures
from .spec import FigureSpec, SpecError, load_spec, spec_from_dict
from .tables import TableError

__version__ = "0.1.0"

__all__ = [
    "FigureSpec",
    "SpecError",
    "TableError",
    "load_spec",
    "render",
    "render_default_figures",
    "spec_from_dict",
    "__version__",
]

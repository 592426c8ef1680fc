"""Figure generation for zrplab CSV outputs.

Reads only files produced by the simulation CLI (CSV bodies plus JSON
manifests) and renders the repository's standard figures.  Figures are
validated by checksums over the plotted data points, not pixels.
"""

__version__ = "0.1.0"

from .figures import FigureSpec, render

__all__ = ["FigureSpec", "render", "__version__"]

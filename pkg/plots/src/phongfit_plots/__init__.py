from .spec import FIGURE_KINDS, MissingColumnError, NoRowsError, PlotSpec, SeriesSpec
from .render import RenderResult, render

__version__ = "0.1.0"

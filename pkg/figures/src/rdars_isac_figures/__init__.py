"""Render experiment-sweep figures from the simulator's CSV outputs."""

from .render import FigureSpec, render_figures

__all__ = ["FigureSpec", "render_figures"]

__version__ = "0.1.0"

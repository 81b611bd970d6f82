"""Deterministic figures from the solver CLI's CSV reports."""

from .figures import FigureSpec, plot, plot_error, plot_ratio, plot_storage

__all__ = ["FigureSpec", "plot", "plot_storage", "plot_ratio", "plot_error"]

"""
Visualization package.
"""

# app.py is served with `solara run`, not imported here

__all__ = []

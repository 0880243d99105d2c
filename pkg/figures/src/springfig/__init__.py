"""Figure rendering for springsim metrics exports.

This package reads the exported metrics file only; it never imports the
simulator itself.
"""

__version__ = "0.1.0"

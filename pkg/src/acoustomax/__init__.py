"""acoustomax: 2D time-harmonic Maxwell laboratory with acoustic modulation.

Simulates acoustically modulated electromagnetic boundary measurements on a
disk cross-section, extracts the pointwise internal functional, and
reconstructs the electrical current density for every uniqueness subcase.
"""

__version__ = "0.1.0"

"""Magnetorotational spectra and self-similar MHD constructions on axisymmetric grids.

Submodules: ``profiles``, ``radial_spectrum``, ``axi_fields``, ``evolution``,
``nonuniqueness`` and ``cli_io`` (the ``mhdlab`` command).
"""

__version__ = "0.1.0"

"""Simulator and analysis toolkit for a dual-microring photon-pair chip.

Modules:
    qstate  - two-qubit linear algebra, state metrics, validators
    source  - microring pair-source spectra, joint spectral amplitudes, Schmidt analysis
    device  - chip model: state preparation, analysis rotations, photon counting
    bell    - CHSH evaluation, closed forms, and the optimal-settings bound
    tomo    - over-complete state tomography with constrained least squares
    fit     - fringe fitting and interferometer phase-voltage calibration
    cli     - command-line experiments writing CSV/JSON artifacts
"""

__version__ = "0.1.0"

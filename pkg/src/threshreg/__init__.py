"""First-hitting-time threshold regression.

Submodules:

* :mod:`~threshreg.process_kernel` simulates parent processes and their hitting times;
* :mod:`~threshreg.fht_analytic` has closed-form hitting-time laws;
* :mod:`~threshreg.timescale` maps calendar time to running time;
* :mod:`~threshreg.regression` fits covariate-linked inverse Gaussian models;
* :mod:`~threshreg.competing` handles competing risks as a minimum of latent times;
* :mod:`~threshreg.longitudinal` covers markers and the uncoupled longitudinal likelihood;
* :mod:`~threshreg.validation` compares Kaplan-Meier and fitted curves;
* :mod:`~threshreg.dataio` and :mod:`~threshreg.cli` handle files and the command line.
"""

from .dataio import TOOL_VERSION as __version__  # noqa: F401

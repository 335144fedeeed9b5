"""Crowdsourced modal identification from mobile-sensor scans with continuous wavelets.

Also contains a synthetic laboratory (modal beam, moving sensors, quarter-car
vehicles) that supplies exact ground truth for the identification pipeline.
"""

__version__ = "0.1.0"

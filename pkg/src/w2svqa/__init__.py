"""Weak-to-strong data engineering for video quality assessment.

Low-level metrics, synthetic distortions, teacher-ensemble pair labels,
histogram-matched curation, gMAD mining, a pairwise student and Thurstone
calibration to absolute scores.
"""

__version__ = "0.1.0"

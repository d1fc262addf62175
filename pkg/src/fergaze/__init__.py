"""Eye-tracking analysis for facial-emotion recognition trials.

Subpackages and modules: ``recording`` (session I/O and kinematics), ``aoi``
(areas of interest), ``events`` (fixations and microsaccades), ``metrics``
(dwell tables), ``stats`` (hypothesis tests), ``modeling`` (predictors and
evaluation), ``simulator`` (synthetic sessions) and ``cli``.
"""
__version__ = "0.1.0"

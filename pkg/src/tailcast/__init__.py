"""Multi-site peaks-over-threshold modelling: EGP margins with convexity
thresholds, angular regression (ROXANE) and MGP distribution regression
(MGPRED) for predicting extremes at a target station."""

__version__ = "0.1.0"

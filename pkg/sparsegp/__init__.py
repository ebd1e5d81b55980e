# Sparse GP toolkit
# FULL, FITC, VFE and DTC regression under one objective, with training and diagnostics
__version__ = "0.1.0"

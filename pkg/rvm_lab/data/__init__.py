"""Calibration constants shipped with rvm_lab."""

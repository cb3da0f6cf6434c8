"""Estimation and inference for generalized extremiles."""

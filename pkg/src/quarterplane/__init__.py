"""Stationary analysis of partially homogeneous random walks in the quarter plane."""

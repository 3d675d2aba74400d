"""Randomized anchors as instruments for the causal effect of beliefs.

Subpackages: ``data`` (datasets and schemas), ``estimate`` (OLS, 2SLS, Wald),
``design`` (anchor selection), ``diagnostics`` (placebo, manipulation, decay),
``simulate`` (synthetic experiments, Monte Carlo) and ``report`` (pipelines, tables, curves).
"""

"""
ModelBandit test suite

Unit tests live under tests/unit, end-to-end runs under tests/integration and
pytest-benchmark timings under tests/performance.
"""

def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance: end-to-end acceptance criteria (criteria 7-9 train models)")

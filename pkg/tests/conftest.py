from hypothesis import settings

# property tests run a fixed example stream so suite results are reproducible
settings.register_profile("repro", derandomize=True)
settings.load_profile("repro")

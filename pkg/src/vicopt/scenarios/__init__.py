"""Bundled scenario presets (JSON), loaded via vicopt.scenario.load_bundled."""

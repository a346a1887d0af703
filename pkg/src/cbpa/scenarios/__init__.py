"""Scenario packs: HVU defense, capture the flag, seek-and-sample, transit."""

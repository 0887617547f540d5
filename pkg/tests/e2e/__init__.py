"""End-to-end integration tests."""

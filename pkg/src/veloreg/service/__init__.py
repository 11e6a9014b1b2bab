"""HTTP service wrapping the registration workflows."""

"""HTTP route modules for the checker service."""

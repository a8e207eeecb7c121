"""hoigraph test."""

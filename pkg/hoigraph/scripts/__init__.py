"""hoigraph cli."""

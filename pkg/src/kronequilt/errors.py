class ResourceGuardError(ValueError):
    """Work requested exceeds a configured size or edge budget."""

"""Boston mechanism and deferred acceptance laboratory."""

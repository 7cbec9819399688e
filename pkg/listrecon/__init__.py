"""TOF-PET list-mode reconstruction toolkit."""

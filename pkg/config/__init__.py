# Runtime settings

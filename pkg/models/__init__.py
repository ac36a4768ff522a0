# Pydantic run configuration and result records.

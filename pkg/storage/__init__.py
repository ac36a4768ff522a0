# Checkpoint and metrics persistence

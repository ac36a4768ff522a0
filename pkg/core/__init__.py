# Numeric core: tensors, cells, optimizer, losses

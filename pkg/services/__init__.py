# Training, comparison, gradient checking and task export.

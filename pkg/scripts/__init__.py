# Batch scripts

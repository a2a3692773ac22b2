# ABOUTME: File formats: series CSVs, versioned JSON model files and flat text reports
# ABOUTME: All writes are atomic

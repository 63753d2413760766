# Command-line handlers

import os

# keep test runs from writing logs/flicr.log in the working tree
os.environ.setdefault('FLICR_LOG_TO_FILE', 'false')

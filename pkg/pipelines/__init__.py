# Pipelines package for the sparse GP toolkit
# Contains experiment orchestration: config parsing, studies, result writing and plot emission

# Config package for the sparse GP toolkit
# Contains configuration loading utilities and YAML configuration files

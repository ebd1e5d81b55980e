# Tests package for the sparse GP toolkit
# Unit tests per library module, integration tests for end-to-end studies

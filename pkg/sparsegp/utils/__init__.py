# Formatting, validation and plotting helpers shared by the library and pipelines

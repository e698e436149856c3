# Utils package for the FIE benchmark

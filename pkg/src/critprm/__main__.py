from critprm.cli import main

main()

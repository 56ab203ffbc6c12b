from shardlog.cli import main

main()

from abcdkit.main import main

main()

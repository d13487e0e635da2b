from densegame.cli import main

raise SystemExit(main())

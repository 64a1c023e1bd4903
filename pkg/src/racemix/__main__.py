from .experiments_cli import main

raise SystemExit(main())

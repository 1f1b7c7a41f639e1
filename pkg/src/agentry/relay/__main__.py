from agentry.relay.cli import main

raise SystemExit(main())

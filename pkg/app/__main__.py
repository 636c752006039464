if __name__ == "__main__":
    import sys

    from app.cli.__main__ import main
    sys.exit(main())

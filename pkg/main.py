# main.py (root launcher)
from rdtrack.main import main

if __name__ == "__main__":
    main()

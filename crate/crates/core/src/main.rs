fn main() {
    fusiform::cli::main()
}

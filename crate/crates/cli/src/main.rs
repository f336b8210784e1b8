use std::io;

fn main() {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let code = affine_ocp_cli::run(&argv, &mut io::stdout().lock(), &mut io::stderr().lock());
    std::process::exit(code);
}

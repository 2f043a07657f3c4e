//! Parameter summaries of both full-size architectures, compared against
//! the reference totals the defaults target.

use smfd::cli::cmd_net_summary;
use smfd::nets::NetKind;

fn main() {
    for kind in [NetKind::MaskGenerator, NetKind::SmfdUnet] {
        print!("{}", cmd_net_summary(kind, None).unwrap());
        println!();
    }
}

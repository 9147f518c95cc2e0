//! Small fixed sources used by tests, the trace driver and the CLI.

use super::{parse_network, parse_source, Network, Source};

/// Nine terms `a1..c3` with eight simplified pairs, including the cycle
/// b1 → c2 → b1. One object, `o1`, is indexed under c1, c2 and c3.
pub const EXAMPLE_SOURCE_TEXT: &str = "\
term a1 a2 a3 b1 b2 b3 c1 c2 c3
pair a2 -> a1
pair a3 -> a1
pair b3 -> a2
pair b1,b2 -> a2
pair c1 -> b1
pair c2 -> b1
pair c2,c3 -> b2
pair b1,b3 -> c2
obj 1 : c1,c2,c3
";

/// The same taxonomy split over three sources, most pairs as articulations.
pub const EXAMPLE_NETWORK_TEXT: &str = "\
source pa
term a1 a2 a3
pair a2 -> a1
pair a3 -> a1
artic pb.b3 -> a2
artic pb.b1,pb.b2 -> a2
source pb
term b1 b2 b3
artic pc.c1 -> b1
artic pc.c2 -> b1
artic pc.c2,pc.c3 -> b2
source pc
term c1 c2 c3
artic pb.b1,pb.b3 -> c2
obj 1 : c1,c2,c3
";

pub fn example_source() -> Source {
    parse_source(EXAMPLE_SOURCE_TEXT).expect("fixture parses")
}

pub fn example_network() -> Network {
    parse_network(EXAMPLE_NETWORK_TEXT).expect("fixture parses")
}

/// The exponential family: h_i = ({u_i,v_i}, u_{i+1}), g_i = ({u_i,v_i}, v_{i+1})
/// for i < n, and h_n = ({u_n,v_n}, t).
pub fn path_family_text(n: usize) -> String {
    assert!(n >= 1);
    let mut out = String::from("term t");
    for i in 1..=n {
        out.push_str(&format!(" u{i} v{i}"));
    }
    out.push('\n');
    for i in 1..n {
        out.push_str(&format!("pair u{i},v{i} -> u{}\n", i + 1));
        out.push_str(&format!("pair u{i},v{i} -> v{}\n", i + 1));
    }
    out.push_str(&format!("pair u{n},v{n} -> t\n"));
    out
}

pub fn path_family(n: usize) -> Source {
    parse_source(&path_family_text(n)).expect("fixture parses")
}

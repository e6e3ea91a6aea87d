//! Forced losses inside the destination OTN: the source OTN's relay buffer
//! recovers them, so every pseudo-ACKed byte still reaches its receiver.

use matchrdma::baselines::SchemeId;
use matchrdma::scenarios;
use matchrdma::sim::simulate;

fn main() {
    for s in [SchemeId::PseudoAck, SchemeId::MatchRdma, SchemeId::DcqcnLike] {
        let o = simulate(&scenarios::safety(s, Some(53))).unwrap();
        let submitted: u64 = o.messages.iter().map(|m| m.size).sum();
        println!(
            "{:<12} submitted {:>9} B  delivered {:>9} B  drops {:>4}  relay retx {:>5}  sender retx {:>5}  ledger balanced: {}",
            s.as_str(),
            submitted,
            o.inter_delivered_bytes,
            o.drops,
            o.relay_retransmits,
            o.sender_retransmits,
            o.ledger.balanced()
        );
    }
}

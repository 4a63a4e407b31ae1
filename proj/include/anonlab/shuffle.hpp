#ifndef ANONLAB_SHUFFLE_HPP
#define ANONLAB_SHUFFLE_HPP

#include <optional>
#include <vector>

#include "anonlab/rng.hpp"
#include "anonlab/suite.hpp"

namespace anonlab::shuffle {

struct ShuffleConfig {
    // Ordered cascade; the first shuffler peels the outermost layer.
    std::vector<KeyPair> shufflers;
    size_t client_count = 0;
    size_t slot_size = 64; // max message bytes; inputs are padded to this
};

// Padded slot: u16 message length || message || random filler.  The filler
// doubles as a nonce, so equal messages from different clients stay distinct
// and ciphertexts cannot be linked by re-encryption.
Bytes pad_slot(const Bytes& message, size_t slot_size, Rng& rng);
Bytes unpad_slot(const Bytes& padded);

struct Submission {
    Bytes padded;     // kept by the client for verification
    Bytes ciphertext; // m concentric layers, outermost for shuffler 0
};

Submission submit(const CipherSuite& suite, const ShuffleConfig& config,
                  const Bytes& message, Rng& client_rng);

struct ShuffleBatch {
    std::vector<Bytes> items;
    size_t layers_remaining = 0;
    size_t expected_count = 0;
    uint64_t round = 0;
};

// Peels one layer off every item and applies a secret permutation.
// Throws on a short batch or when any item fails to decrypt (wrong order or
// tampered ciphertext).
ShuffleBatch shuffle_step(const CipherSuite& suite, const KeyPair& shuffler,
                          const ShuffleBatch& batch, Rng& rng);

enum class Verdict { Ok, Dropped, Duplicated };

// ok iff the client's padded slot appears exactly once in the output.
Verdict verify(const Bytes& my_padded, const std::vector<Bytes>& outputs);

enum class TamperAction { Drop, Duplicate, ModifyCiphertext, ModifyCleartext };

// Injected misbehaviour for one shuffler, used by attack scenarios and tests.
// Drop/Duplicate/ModifyCiphertext act on the shuffler's input batch;
// ModifyCleartext acts on its output (meaningful at the last shuffler).
struct TamperSpec {
    size_t shuffler_index = 0;
    TamperAction action = TamperAction::Drop;
    size_t item_index = 0; // index in the shuffler's input batch
};

enum class CascadeStatus {
    Released,       // all clients reported ok
    ComplaintAbort, // some verify() came back dropped/duplicated
    DecryptAbort,   // a tampered ciphertext failed authentication mid-cascade
};

// What an observer is allowed to see: submissions in, cleartexts out.
// Outputs are canonically sorted; no permutation data is ever included.
struct CascadeTranscript {
    std::vector<Bytes> inputs;
    std::vector<Bytes> outputs;
};

struct CascadeResult {
    CascadeStatus status = CascadeStatus::Released;
    std::vector<Verdict> verdicts;         // per client, submission order
    std::vector<Bytes> released;           // unpadded messages, empty unless Released
    CascadeTranscript transcript;
};

// Full cascade with release gating: cleartexts are released to applications
// only after every client reports ok.
CascadeResult run_cascade(const CipherSuite& suite, const ShuffleConfig& config,
                          const std::vector<Submission>& submissions, Rng& rng,
                          const std::optional<TamperSpec>& tamper = std::nullopt);

} // namespace anonlab::shuffle

#endif

#ifndef ANONLAB_SUITE_HPP
#define ANONLAB_SUITE_HPP

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "anonlab/bytes.hpp"

namespace anonlab {

// Thrown when a ciphertext fails authentication: wrong key, truncation, or
// tampering.  Onion peeling and shuffle steps rely on this being detectable.
class DecryptError : public std::runtime_error {
public:
    explicit DecryptError(const std::string& what) : std::runtime_error(what) {}
};

struct KeyPair {
    std::string id;
    Bytes public_part;
    Bytes private_part;
};

constexpr size_t kSeedSize = 32;
// ephemeral public key (32) + MAC (16)
constexpr size_t kPkeOverhead = 48;

struct SharedSeed {
    std::array<uint8_t, kSeedSize> bytes{};
    std::string party_a; // lexicographically smaller id
    std::string party_b;
};

enum class SuiteKind {
    // Every operation, including key generation and encryption, is a pure
    // function of its inputs.  Used for bit-exact fixtures and replay.
    // Offers no security: the encryption randomness is derived from the
    // plaintext itself.
    TestDeterministic,
    // Randomized sealed-box encryption (X25519 + XSalsa20-Poly1305).
    Real,
};

// Public-key encryption, pairwise seed agreement, and a pseudorandom
// generator, all over X25519/ChaCha20/BLAKE2b.  The two suites share wire
// formats; they differ only in where encryption randomness comes from.
class CipherSuite {
public:
    explicit CipherSuite(SuiteKind kind);

    SuiteKind kind() const { return kind_; }
    const std::string& name() const { return name_; }

    // Test suite: keys are a deterministic function of the id.
    // Real suite: fresh random keys; the id is a label only.
    KeyPair generate_keypair(const std::string& id) const;

    Bytes encrypt(const Bytes& public_part, const Bytes& plaintext) const;
    // Throws DecryptError on wrong key or malformed/truncated ciphertext.
    Bytes decrypt(const Bytes& private_part, const Bytes& ciphertext) const;

    // Symmetric: derive_seed(a, B) == derive_seed(b, A).
    SharedSeed derive_seed(const KeyPair& mine, const std::string& their_id,
                           const Bytes& their_public) const;

    // Deterministic in (seed, round_tag, n); prefix-consistent in n.
    Bytes prg(const SharedSeed& seed, uint64_t round_tag, size_t n) const;

    // Binding commitment with explicit nonce: H(nonce || data).
    static Bytes commit(const Bytes& nonce, std::span<const uint8_t> data);
    static Bytes hash(std::span<const uint8_t> data);

private:
    SuiteKind kind_;
    std::string name_;
};

} // namespace anonlab

#endif

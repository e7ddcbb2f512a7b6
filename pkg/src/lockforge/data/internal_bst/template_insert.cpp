// Internal BST insert.  Descends until the search runs out of tree,
// then fills the empty child slot on the correct side.
#include "tree.h"

bool insert(int key){
    while(true){
        @@begin-traversal
        struct node * curr = root;
        struct node * next = root;
        while(next != NULL && next->key != key){
            curr = next;
            if(key < next->key)
                next = next->left;
            else
                next = next->right;
        }
        @@end-traversal
        if(next != NULL)
            return false;
        if(key < curr->key){
            @@insert::block1
            return true;
        }
        @@insert::block2
        return true;
    }
}
